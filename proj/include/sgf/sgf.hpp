#pragma once

#include "sgf/cubature.hpp"
#include "sgf/error.hpp"
#include "sgf/filters.hpp"
#include "sgf/gaussian.hpp"
#include "sgf/model.hpp"
#include "sgf/numeric.hpp"
#include "sgf/optimize.hpp"
#include "sgf/rng.hpp"
#include "sgf/testbeds.hpp"
#include "sgf/updates.hpp"
