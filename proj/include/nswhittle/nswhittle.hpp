#pragma once

#include "core.hpp"
#include "random.hpp"
#include "environment.hpp"
#include "estimator.hpp"
#include "evi.hpp"
#include "dual_policy.hpp"
#include "oracle.hpp"
#include "serialization.hpp"
#include "harness.hpp"
