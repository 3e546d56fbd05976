#pragma once

#include <string>
#include <utility>
#include <variant>

namespace gf {

/// Error categories carried by result<T>. Mapped to CLI exit codes in tools/.
enum class errc {
  invalid_argument,  // bad shapes, ranks, hypothesis violations
  parse_error,       // config / expression / file-format syntax
  io_error,          // filesystem and serialization failures
  solver_failure,    // Newton / CG did not converge
  numerical,         // NaN / Inf encountered mid-computation
  inconclusive,      // calibration found no convergent variant
};

struct error {
  errc code;
  std::string message;
};

/// Minimal expected-like container: a value or an error, never both.
/// (std::expected is C++23; this toolchain is C++20.)
template <class T>
class result {
 public:
  result(T value) : v_(std::move(value)) {}
  result(error e) : v_(std::move(e)) {}
  static result failure(errc c, std::string msg) { return result(error{c, std::move(msg)}); }

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& { return std::get<T>(v_); }
  T& value() & { return std::get<T>(v_); }
  T&& value() && { return std::get<T>(std::move(v_)); }
  const error& err() const { return std::get<error>(v_); }

 private:
  std::variant<T, error> v_;
};

struct ok_t {};
using status = result<ok_t>;
inline status ok() { return status(ok_t{}); }
inline status fail(errc c, std::string msg) { return status::failure(c, std::move(msg)); }

}  // namespace gf
