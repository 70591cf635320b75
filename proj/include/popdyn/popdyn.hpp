#pragma once

#include "popdyn/core.hpp"
#include "popdyn/dynamics.hpp"
#include "popdyn/io.hpp"
#include "popdyn/linalg.hpp"
#include "popdyn/markov.hpp"
#include "popdyn/ode.hpp"
#include "popdyn/protocol.hpp"
#include "popdyn/reduction.hpp"
#include "popdyn/stability.hpp"
#include "popdyn/stochastic.hpp"
#include "popdyn/viral.hpp"
