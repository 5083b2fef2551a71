// Umbrella header: the whole library.
#pragma once

#include "ovainn/continual.hpp"
#include "ovainn/dataio.hpp"
#include "ovainn/errors.hpp"
#include "ovainn/flowcore.hpp"
#include "ovainn/numkit.hpp"
#include "ovainn/optim.hpp"
