#pragma once

#include "bingham/distribution.hpp"
#include "bingham/errors.hpp"
#include "bingham/fit.hpp"
#include "bingham/io.hpp"
#include "bingham/loss.hpp"
#include "bingham/normconst.hpp"
#include "bingham/quaternion.hpp"
#include "bingham/sampler.hpp"
#include "bingham/types.hpp"
