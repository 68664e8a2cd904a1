#pragma once

#include "sfe/baselines.hpp"
#include "sfe/benchmark.hpp"
#include "sfe/data_model.hpp"
#include "sfe/effects.hpp"
#include "sfe/optimizer.hpp"
#include "sfe/pairwise.hpp"
#include "sfe/simulation.hpp"
#include "sfe/space_io.hpp"
