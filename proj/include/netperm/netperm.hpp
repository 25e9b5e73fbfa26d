#pragma once

#include "netperm/aft.hpp"
#include "netperm/causal.hpp"
#include "netperm/common.hpp"
#include "netperm/inference.hpp"
#include "netperm/interference.hpp"
#include "netperm/parallel.hpp"
#include "netperm/randomize.hpp"
#include "netperm/rng.hpp"
#include "netperm/simulate.hpp"
#include "netperm/step_cdf.hpp"
#include "netperm/survival.hpp"
