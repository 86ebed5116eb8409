#pragma once

#include "cbi/errors.hpp"
#include "cbi/model.hpp"
#include "cbi/moments.hpp"
#include "cbi/riccati.hpp"
#include "cbi/rng.hpp"
#include "cbi/simulate.hpp"
#include "cbi/spectral.hpp"
#include "cbi/verify.hpp"
