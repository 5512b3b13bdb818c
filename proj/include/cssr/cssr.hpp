#pragma once

// Causal-state sequence modeling: parse trees, hypothesis-test-driven state
// splitting, unifilar machine inference, exact generators, and baselines.

#include "cssr/alphabet.hpp"
#include "cssr/distribution.hpp"
#include "cssr/harness.hpp"
#include "cssr/hmm.hpp"
#include "cssr/machine.hpp"
#include "cssr/parse_tree.hpp"
#include "cssr/reconstruction.hpp"
#include "cssr/sources.hpp"
#include "cssr/stat_tests.hpp"
#include "cssr/vlmm.hpp"
