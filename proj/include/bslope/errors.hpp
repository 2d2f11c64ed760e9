#ifndef BSLOPE_ERRORS_HPP
#define BSLOPE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bslope {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define BSLOPE_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

BSLOPE_DEFINE_ERROR(ImproperPrior);
BSLOPE_DEFINE_ERROR(DomainError);
BSLOPE_DEFINE_ERROR(DimensionTooLarge);
BSLOPE_DEFINE_ERROR(RankDeficient);
BSLOPE_DEFINE_ERROR(ZeroColumn);
BSLOPE_DEFINE_ERROR(DegenerateConditional);
BSLOPE_DEFINE_ERROR(BracketEmpty);
BSLOPE_DEFINE_ERROR(TooFewDraws);
BSLOPE_DEFINE_ERROR(DimensionMismatch);
BSLOPE_DEFINE_ERROR(ConstantColumn);

#undef BSLOPE_DEFINE_ERROR

/// CSV parse failure; carries the 1-based line and column of the offending cell.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line, long column)
      : Error(what + " (line " + std::to_string(line) + ", column " +
              std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  long line() const { return line_; }
  long column() const { return column_; }

 private:
  long line_;
  long column_;
};

}  // namespace bslope

#endif  // BSLOPE_ERRORS_HPP
