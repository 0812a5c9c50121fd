#pragma once

// Discovery of lurking variables in experiment data: a Gaussian process over
// (inputs, time) for gradual effects plus a sparse cumulative-shock term for
// sudden effects, fitted by an empirical-Bayes / lasso alternation.

#include "lurk/common.hpp"
#include "lurk/dataset.hpp"
#include "lurk/effects.hpp"
#include "lurk/estimator.hpp"
#include "lurk/gp.hpp"
#include "lurk/io.hpp"
#include "lurk/kernel.hpp"
#include "lurk/nelder_mead.hpp"
#include "lurk/simgen.hpp"
#include "lurk/sparse_changes.hpp"
