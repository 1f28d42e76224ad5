#pragma once

#include <string>

namespace atlas {

// Random (version 4) UUID in canonical lowercase form.
std::string make_uuid();

}  // namespace atlas
