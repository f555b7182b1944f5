#pragma once

#include "sponet/competitive.hpp"
#include "sponet/cooperative.hpp"
#include "sponet/demand.hpp"
#include "sponet/errors.hpp"
#include "sponet/experiment.hpp"
#include "sponet/market.hpp"
#include "sponet/validate.hpp"
