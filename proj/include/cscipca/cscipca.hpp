#pragma once

// Umbrella header.

#include "cscipca/panel.hpp"
#include "cscipca/ipca.hpp"
#include "cscipca/normalization.hpp"
#include "cscipca/csc.hpp"
#include "cscipca/baselines.hpp"
#include "cscipca/simulation.hpp"
#include "cscipca/tuning.hpp"
#include "cscipca/inference.hpp"
#include "cscipca/serialize.hpp"
