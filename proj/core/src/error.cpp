#include "audit/error.hpp"

namespace audit {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::empty_document: return "empty_document";
    case Errc::not_enough_passages: return "not_enough_passages";
    case Errc::provider_unavailable: return "provider_unavailable";
    case Errc::malformed_request: return "malformed_request";
    case Errc::timeout: return "timeout";
    case Errc::empty_text: return "empty_text";
    case Errc::parse_error: return "parse_error";
    case Errc::incomplete_set: return "incomplete_set";
    case Errc::bad_budget: return "bad_budget";
    case Errc::bad_args: return "bad_args";
    case Errc::empty_class: return "empty_class";
    case Errc::no_trials: return "no_trials";
    case Errc::bad_dimension: return "bad_dimension";
    case Errc::missing_metadata: return "missing_metadata";
    case Errc::corrupt_snapshot: return "corrupt_snapshot";
    case Errc::config_error: return "config_error";
  }
  return "unknown";
}

namespace {

std::string compose(Errc code, const std::string& message, long line) {
  std::string out = errc_name(code);
  if (line >= 0) {
    out += " (line ";
    out += std::to_string(line);
    out += ")";
  }
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(Errc code, const std::string& message, long line)
    : std::runtime_error(compose(code, message, line)), code_(code), line_(line) {}

}  // namespace audit
