#pragma once
// Umbrella header.

#include <dsml/core.hpp>
#include <dsml/datagen.hpp>
#include <dsml/debias.hpp>
#include <dsml/experiment.hpp>
#include <dsml/metrics.hpp>
#include <dsml/protocol.hpp>
#include <dsml/solvers.hpp>
