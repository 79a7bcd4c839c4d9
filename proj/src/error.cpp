#include "ktune/error.hpp"

namespace ktune {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Backend: return "backend";
    case ErrorKind::Trainer: return "trainer";
    case ErrorKind::Internal: return "internal";
    }
    return "internal";
}

Error::Error(ErrorKind kind, std::string code, const std::string& message)
    : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)) {}

namespace {

std::string describe_pending(const std::vector<std::string>& ids, const std::string& cause) {
    std::string out = "campaign incomplete, " + std::to_string(ids.size()) + " pending id(s):";
    std::size_t shown = 0;
    for (const auto& id : ids) {
        if (shown++ == 20) {
            out += " ...";
            break;
        }
        out += " " + id;
    }
    if (!cause.empty()) out += " (last failure: " + cause + ")";
    return out;
}

} // namespace

CampaignError::CampaignError(std::vector<std::string> pending_ids, const std::string& cause)
    : BackendError("CampaignIncomplete", describe_pending(pending_ids, cause)),
      pending_(std::move(pending_ids)) {}

} // namespace ktune
