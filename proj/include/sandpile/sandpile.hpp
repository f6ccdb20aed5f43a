#pragma once

#include "sandpile/common.hpp"
#include "sandpile/dynamics.hpp"
#include "sandpile/engine.hpp"
#include "sandpile/io.hpp"
#include "sandpile/measure.hpp"
#include "sandpile/observables.hpp"
#include "sandpile/rate_function.hpp"
#include "sandpile/recurrence.hpp"
#include "sandpile/topology.hpp"
