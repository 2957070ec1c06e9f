#pragma once

#include "fairjudge/losses.hpp"
#include "fairjudge/metrics.hpp"
#include "fairjudge/parser.hpp"
#include "fairjudge/pipeline.hpp"
#include "fairjudge/policy.hpp"
#include "fairjudge/records.hpp"
#include "fairjudge/reward.hpp"
#include "fairjudge/rng.hpp"
#include "fairjudge/util.hpp"
