#pragma once

#include "specdyn/analysis.hpp"
#include "specdyn/dynamics.hpp"
#include "specdyn/errors.hpp"
#include "specdyn/experiments.hpp"
#include "specdyn/io.hpp"
#include "specdyn/linalg.hpp"
#include "specdyn/precond.hpp"
#include "specdyn/rng.hpp"
#include "specdyn/spectral.hpp"
