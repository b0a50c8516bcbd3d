#pragma once

#include "pathforge/cot.hpp"
#include "pathforge/dataset.hpp"
#include "pathforge/error.hpp"
#include "pathforge/fixture_tree.hpp"
#include "pathforge/grpo.hpp"
#include "pathforge/metrics.hpp"
#include "pathforge/path_sampler.hpp"
#include "pathforge/rng.hpp"
#include "pathforge/svg.hpp"
#include "pathforge/taxonomy.hpp"
#include "pathforge/toy_lab.hpp"
#include "pathforge/toy_policy.hpp"
#include "pathforge/toy_world.hpp"
