#pragma once

#include "terrafuse/fusion/ekf.hpp"
#include "terrafuse/fusion/gate.hpp"
#include "terrafuse/fusion/models.hpp"
#include "terrafuse/fusion/runner.hpp"
#include "terrafuse/fusion/state.hpp"
#include "terrafuse/fusion/ukf.hpp"
