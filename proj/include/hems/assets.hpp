// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace hems {

// Text assets compiled into the library (prompt library, default injection
// pattern registry). Throws kNotFound for an unknown name.
std::string_view embedded_asset(std::string_view name);

}  // namespace hems
