#ifndef S3C_ERROR_HPP
#define S3C_ERROR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace s3c {

enum class ErrorCode {
  DimensionMismatch,
  InvalidParams,
  InvalidConfig,
  NumericalDivergence,
  TooManyUnits,
  ZeroColumn,
  PatchTooLarge,
  RankDeficient,
  GridTooFine,
  EmptyDataset,
  LabelOutOfRange,
  CorruptArchive,
  VersionMismatch,
  MalformedHeader,
  RaggedRows,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code so the CLI can map it
// to an exit status and a single-line diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class NumericalDivergence : public Error {
 public:
  NumericalDivergence(std::int64_t iteration, std::int64_t unit,
                      const std::string& where);
  std::int64_t iteration() const noexcept { return iteration_; }
  std::int64_t unit() const noexcept { return unit_; }

 private:
  std::int64_t iteration_;
  std::int64_t unit_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace s3c

#endif  // S3C_ERROR_HPP
