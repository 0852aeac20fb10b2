#pragma once

// Umbrella header for the analysis library. The HTTP layer lives in service.hpp.
#include "errors.hpp"
#include "polynomial.hpp"
#include "transfer_function.hpp"
#include "sampling.hpp"
#include "spectra.hpp"
#include "stability.hpp"
#include "bounds.hpp"
#include "simulate.hpp"
#include "io.hpp"
#include "problem.hpp"
#include "analyze.hpp"
