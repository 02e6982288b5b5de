#pragma once

#include <stdexcept>
#include <string>

namespace epsolute {

// Root of every error raised by the library. Subclasses name the failure
// category; callers that only care about "something went wrong" catch Error.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

#define EPSOLUTE_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                                \
      public:                                                                  \
        using Error::Error;                                                    \
    }

EPSOLUTE_DEFINE_ERROR(ParameterError);
EPSOLUTE_DEFINE_ERROR(SizeError);
EPSOLUTE_DEFINE_ERROR(AuthenticationError);
EPSOLUTE_DEFINE_ERROR(FormatError);
EPSOLUTE_DEFINE_ERROR(StorageError);
EPSOLUTE_DEFINE_ERROR(AddressError);
EPSOLUTE_DEFINE_ERROR(DataError);
EPSOLUTE_DEFINE_ERROR(QueryError);
EPSOLUTE_DEFINE_ERROR(BudgetError);
EPSOLUTE_DEFINE_ERROR(ConfigError);
EPSOLUTE_DEFINE_ERROR(IoError);

// Raised when the PathORAM stash exceeds its configured limit after
// write-back. The ORAM is unusable afterwards.
EPSOLUTE_DEFINE_ERROR(StashOverflow);

#undef EPSOLUTE_DEFINE_ERROR

} // namespace epsolute
