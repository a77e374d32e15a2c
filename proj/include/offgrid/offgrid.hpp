#pragma once

#include "offgrid/benchmark.hpp"
#include "offgrid/core.hpp"
#include "offgrid/ingest.hpp"
#include "offgrid/io.hpp"
#include "offgrid/mdp.hpp"
#include "offgrid/mdp_builder.hpp"
#include "offgrid/measures.hpp"
#include "offgrid/sim_oracle.hpp"
#include "offgrid/solvers.hpp"
#include "offgrid/sparse.hpp"
#include "offgrid/state_model.hpp"
#include "offgrid/structured_eval.hpp"
