#pragma once

// Umbrella header for the whole library.

#include "miso/common.hpp"
#include "miso/experiment.hpp"
#include "miso/optimizer.hpp"
#include "miso/profiles.hpp"
#include "miso/sim.hpp"
#include "miso/topology.hpp"
#include "miso/workload.hpp"
