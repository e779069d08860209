#pragma once

#include "tlmc/core.hpp"
#include "tlmc/model.hpp"
#include "tlmc/kernel_coeffs.hpp"
#include "tlmc/delta_u.hpp"
#include "tlmc/sampler.hpp"
#include "tlmc/reference.hpp"
#include "tlmc/analysis.hpp"
#include "tlmc/metrics.hpp"
