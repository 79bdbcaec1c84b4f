#include "crashforge/errors.hpp"

namespace crashforge {

std::string error_kind(const std::exception& e) {
#define CF_KIND(T) \
    if (dynamic_cast<const T*>(&e) != nullptr) return #T;
    CF_KIND(SyntaxError)
    CF_KIND(SchemaError)
    CF_KIND(VersionError)
    CF_KIND(IoError)
    CF_KIND(ValidationError)
    CF_KIND(ConfigError)
    CF_KIND(ChannelMissing)
    CF_KIND(NoEvents)
    CF_KIND(RoleIndeterminate)
    CF_KIND(AuthError)
    CF_KIND(TimeoutError)
    CF_KIND(TransportError)
    CF_KIND(UnsupportedImage)
    CF_KIND(ParseError)
    CF_KIND(EmptyInput)
    CF_KIND(TemplateError)
    CF_KIND(SpecError)
#undef CF_KIND
    return "Error";
}

}  // namespace crashforge
