#pragma once

#include "bcm/error.hpp"
#include "bcm/grid.hpp"
#include "bcm/geometry.hpp"
#include "bcm/operator.hpp"
#include "bcm/wave.hpp"
#include "bcm/s2s.hpp"
#include "bcm/control.hpp"
#include "bcm/recon.hpp"
#include "bcm/scene.hpp"
