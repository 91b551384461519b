#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mlgt {

/// Tensor shapes that do not line up (matmul inner dims, widths, kernel vs input).
class DimensionError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

/// Non-finite values produced by a forward op.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Undecodable raster or unreadable input file.
class InputError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Dataset directory does not follow root/{sketches,images}/<class>/<file>.
class LayoutError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class SamplingError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Gradient checking could not run (e.g. the function is not deterministic).
class CheckError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Malformed binary file. Carries the byte offset at which decoding failed.
class FormatError : public std::runtime_error {
   public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

   private:
    std::uint64_t offset_;
};

}  // namespace mlgt
