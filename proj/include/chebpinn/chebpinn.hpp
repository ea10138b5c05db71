#pragma once

#include "chebpinn/error.hpp"
#include "chebpinn/dense.hpp"
#include "chebpinn/chebyshev.hpp"
#include "chebpinn/eps_series.hpp"
#include "chebpinn/operator.hpp"
#include "chebpinn/featurenet.hpp"
#include "chebpinn/pretrain.hpp"
#include "chebpinn/oneshot.hpp"
#include "chebpinn/rk45.hpp"
#include "chebpinn/bench.hpp"
#include "chebpinn/io.hpp"
#include "chebpinn/config.hpp"
