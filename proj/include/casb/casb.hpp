#pragma once

// Umbrella header: the full grid-based bridge-steering toolkit.

#include "casb/calculus.hpp"
#include "casb/common.hpp"
#include "casb/config.hpp"
#include "casb/ensemble.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"
#include "casb/io.hpp"
#include "casb/madelung.hpp"
#include "casb/manufactured.hpp"
#include "casb/pipelines.hpp"
#include "casb/potentials.hpp"
#include "casb/sb_solver.hpp"
#include "casb/verifier.hpp"
