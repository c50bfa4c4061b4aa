#pragma once

#if defined(ICLAB_VENDORED_JSON)
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif

namespace iclab::harness {
using Json = nlohmann::json;
}
