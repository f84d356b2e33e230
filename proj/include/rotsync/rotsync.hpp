#pragma once

#include "rotsync/cost.hpp"
#include "rotsync/denoise.hpp"
#include "rotsync/error.hpp"
#include "rotsync/graph_io.hpp"
#include "rotsync/irls.hpp"
#include "rotsync/parallel.hpp"
#include "rotsync/so3.hpp"
#include "rotsync/synth.hpp"
#include "rotsync/view_graph.hpp"
