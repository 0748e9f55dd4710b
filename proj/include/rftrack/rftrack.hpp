#pragma once

#include "rftrack/dataio.hpp"
#include "rftrack/ekf.hpp"
#include "rftrack/errors.hpp"
#include "rftrack/geodesy.hpp"
#include "rftrack/metrics.hpp"
#include "rftrack/motion_models.hpp"
#include "rftrack/simulation.hpp"
#include "rftrack/tdoa.hpp"
