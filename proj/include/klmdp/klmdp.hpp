#pragma once

#include "klmdp/chain_solvers.hpp"
#include "klmdp/errors.hpp"
#include "klmdp/kl_calculus.hpp"
#include "klmdp/ode_engine.hpp"
#include "klmdp/state_space.hpp"
#include "klmdp/uav_benchmark.hpp"

namespace klmdp {
inline constexpr const char* kVersion = "0.1.0";
}
