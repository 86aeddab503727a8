#pragma once

#include <stdexcept>
#include <string>

namespace audit {

enum class Errc {
  empty_document,
  not_enough_passages,
  provider_unavailable,
  malformed_request,
  timeout,
  empty_text,
  parse_error,
  incomplete_set,
  bad_budget,
  bad_args,
  empty_class,
  no_trials,
  bad_dimension,
  missing_metadata,
  corrupt_snapshot,
  config_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, long line = -1);

  Errc code() const noexcept { return code_; }

  /// 1-based line number for corrupt_snapshot / config_error; -1 otherwise.
  long line() const noexcept { return line_; }

 private:
  Errc code_;
  long line_;
};

}  // namespace audit
