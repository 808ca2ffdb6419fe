#pragma once

#include <stdexcept>
#include <string>

namespace ndpp {

// Every failure the library reports deliberately. Callers branch on the code;
// the message is for humans.
enum class Errc {
  dimension_error,
  singular_matrix,
  not_skew_symmetric,
  too_large,
  io_error,
  format_error,
  numerical_failure,
  non_positive_minor,
  zero_count,
  empty_dataset,
  split_too_large,
  diverged,
  degenerate_gain,
  degenerate_conditioning,
  basket_too_small,
  zero_reference,
  rejection_exhausted,
  unknown_item,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace ndpp
