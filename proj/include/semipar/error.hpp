#ifndef SEMIPAR_ERROR_HPP
#define SEMIPAR_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace semipar {

enum class Errc {
  invalid_argument,
  overflow,
  unsupported_psf,
  singular_diagonal,
  insufficient_moments,
  not_positive_definite,
  singular_information,
  truncation_too_small,
  empty_sample,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::overflow: return "Overflow";
    case Errc::unsupported_psf: return "UnsupportedPsf";
    case Errc::singular_diagonal: return "SingularDiagonal";
    case Errc::insufficient_moments: return "InsufficientMoments";
    case Errc::not_positive_definite: return "NotPositiveDefinite";
    case Errc::singular_information: return "SingularInformation";
    case Errc::truncation_too_small: return "TruncationTooSmall";
    case Errc::empty_sample: return "EmptySample";
  }
  return "Unknown";
}

/// Library error. `index()` carries the offending row/mode where one exists
/// (e.g. the zero diagonal entry for SingularDiagonal).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::size_t index = npos)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        index_(index) {}

  Errc code() const noexcept { return code_; }
  std::size_t index() const noexcept { return index_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  Errc code_;
  std::size_t index_;
};

namespace detail {

inline void require(bool condition, Errc code, const std::string& what,
                    std::size_t index = Error::npos) {
  if (!condition) throw Error(code, what, index);
}

}  // namespace detail
}  // namespace semipar

#endif  // SEMIPAR_ERROR_HPP
