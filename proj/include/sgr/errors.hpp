// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sgr {

/// Base of every domain error raised by the library. The CLI maps any
/// sgr::Error to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SGR_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

SGR_DEFINE_ERROR(ParseError);
SGR_DEFINE_ERROR(LayoutError);
SGR_DEFINE_ERROR(ValueError);
SGR_DEFINE_ERROR(OrderError);
SGR_DEFINE_ERROR(EmptyError);
SGR_DEFINE_ERROR(LabelError);
SGR_DEFINE_ERROR(DuplicateError);
SGR_DEFINE_ERROR(DegenerateFrameError);
SGR_DEFINE_ERROR(ImputationRequiredError);
SGR_DEFINE_ERROR(TooShortError);
SGR_DEFINE_ERROR(ShapeError);
SGR_DEFINE_ERROR(FormatError);
SGR_DEFINE_ERROR(CorruptError);
SGR_DEFINE_ERROR(StratifyError);
SGR_DEFINE_ERROR(ConfigError);
SGR_DEFINE_ERROR(DivergenceError);
SGR_DEFINE_ERROR(IoError);

#undef SGR_DEFINE_ERROR

/// Wraps an error raised inside a named pipeline stage. The original kind is
/// kept so callers can still dispatch on it.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const Error& inner)
      : Error(inner.kind(), "[" + stage + "] " + inner.what()), stage_(stage) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace sgr
