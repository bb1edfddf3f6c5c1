#pragma once

#include <stdexcept>
#include <string>

namespace lcar {

/// Base class for all library errors. `code()` is a stable machine-readable tag.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define LCAR_DEFINE_ERROR(Name)                                        \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& what) : Error(#Name, what) {} \
    }

LCAR_DEFINE_ERROR(IndexOutOfRange);
LCAR_DEFINE_ERROR(SelfLoop);
LCAR_DEFINE_ERROR(NonPositiveEpsilon);
LCAR_DEFINE_ERROR(NotPositiveDefinite);
LCAR_DEFINE_ERROR(DimensionMismatch);
LCAR_DEFINE_ERROR(SingularDesign);
LCAR_DEFINE_ERROR(EmptyPriorData);
LCAR_DEFINE_ERROR(MissingLogDetCache);
LCAR_DEFINE_ERROR(EmptyTrace);
LCAR_DEFINE_ERROR(ConstantResiduals);
LCAR_DEFINE_ERROR(NonConvergence);
LCAR_DEFINE_ERROR(ParseError);
LCAR_DEFINE_ERROR(InconsistentUnits);
LCAR_DEFINE_ERROR(NonPositiveExpected);
LCAR_DEFINE_ERROR(SingularCovariance);
LCAR_DEFINE_ERROR(NoBracket);
LCAR_DEFINE_ERROR(InvalidArgument);

#undef LCAR_DEFINE_ERROR

}  // namespace lcar
