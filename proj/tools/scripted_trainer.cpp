// Stand-in for a real fine-tuning job. Honors the stage-directory contract without
// touching any weights: per epoch it echoes the epoch's id order, writes the
// checkpoint ref "<stage dir name>/epoch<k>" and touches the sentinel.
//
// KTUNE_SCRIPTED_FAIL_EPOCH=k makes it exit 3 when epoch k starts.
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "ktune/io.hpp"
#include "ktune/trainer.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: ktune-scripted-trainer <stage-dir>\n";
        return 2;
    }
    const fs::path dir = argv[1];
    const auto hparams_path = dir / "hparams.json";
    if (!fs::exists(hparams_path)) {
        std::cerr << "missing " << hparams_path << "\n";
        return 2;
    }
    std::uint32_t epochs = 0;
    try {
        epochs = json::parse(ktune::read_file(hparams_path)).at("max_epochs").get<std::uint32_t>();
    } catch (const std::exception& e) {
        std::cerr << "bad hparams: " << e.what() << "\n";
        return 2;
    }
    std::uint32_t fail_at = 0;
    if (const char* env = std::getenv("KTUNE_SCRIPTED_FAIL_EPOCH")) fail_at = static_cast<std::uint32_t>(std::atoi(env));

    const auto name = fs::absolute(dir).lexically_normal().filename().string();
    for (std::uint32_t k = 1; k <= epochs; ++k) {
        if (k == fail_at) {
            std::cerr << "scripted failure at epoch " << k << "\n";
            return 3;
        }
        const auto ids_path = dir / "epochs" / ("epoch_" + std::to_string(k) + ".ids");
        if (!fs::exists(ids_path)) {
            std::cerr << "missing " << ids_path << "\n";
            return 2;
        }
        std::cout << "epoch " << k;
        for (const auto& id : ktune::read_lines(ids_path)) std::cout << " " << id;
        std::cout << "\n";
        ktune::write_file_atomic(ktune::epoch_checkpoint(dir, k), name + "/epoch" + std::to_string(k) + "\n");
        ktune::write_file_atomic(ktune::epoch_sentinel(dir, k), "");
    }
    return 0;
}
