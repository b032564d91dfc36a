#pragma once
// nlohmann::json from vendor/.
#include "json.hpp"
