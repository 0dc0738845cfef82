#pragma once

#include "loghom/errors.hpp"
#include "loghom/rng.hpp"
#include "loghom/lattice.hpp"
#include "loghom/fft.hpp"
#include "loghom/covariance.hpp"
#include "loghom/field.hpp"
#include "loghom/pde.hpp"
#include "loghom/ball.hpp"
#include "loghom/correctors.hpp"
#include "loghom/stats.hpp"
#include "loghom/radii.hpp"
#include "loghom/fluctuations.hpp"
#include "loghom/twoscale.hpp"
#include "loghom/io.hpp"
#include "loghom/config.hpp"
#include "loghom/experiment.hpp"
