#pragma once

#include "crowdreg/baselines.hpp"
#include "crowdreg/bounds.hpp"
#include "crowdreg/config.hpp"
#include "crowdreg/error.hpp"
#include "crowdreg/experiment.hpp"
#include "crowdreg/factors.hpp"
#include "crowdreg/graph.hpp"
#include "crowdreg/inference.hpp"
#include "crowdreg/io.hpp"
#include "crowdreg/kernel.hpp"
#include "crowdreg/metrics.hpp"
#include "crowdreg/synth.hpp"
