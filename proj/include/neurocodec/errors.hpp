#ifndef NEUROCODEC_ERRORS_HPP
#define NEUROCODEC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace neurocodec {

// Exit-code classes used by the CLI: config errors -> 1, data errors -> 2,
// numerics errors -> 3.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : DataError {
  explicit FormatError(const std::string& msg) : DataError(msg) {}
};

struct RegistryError : DataError {
  explicit RegistryError(const std::string& msg) : DataError(msg) {}
};

struct ResampleError : DataError {
  explicit ResampleError(const std::string& msg) : DataError(msg) {}
};

struct SegmentError : DataError {
  explicit SegmentError(const std::string& msg) : DataError(msg) {}
};

struct SequenceLengthError : DataError {
  explicit SequenceLengthError(const std::string& msg) : DataError(msg) {}
};

struct SplitError : DataError {
  explicit SplitError(const std::string& msg) : DataError(msg) {}
};

struct MaskError : DataError {
  explicit MaskError(const std::string& msg) : DataError(msg) {}
};

struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MetricUndefined : std::runtime_error {
  explicit MetricUndefined(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace neurocodec

#endif
