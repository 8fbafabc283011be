#pragma once

#include "nanopk/augment.hpp"
#include "nanopk/autodiff.hpp"
#include "nanopk/checkpoint.hpp"
#include "nanopk/config.hpp"
#include "nanopk/dataset.hpp"
#include "nanopk/ensemble.hpp"
#include "nanopk/error.hpp"
#include "nanopk/features.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/metrics.hpp"
#include "nanopk/multiview.hpp"
#include "nanopk/pipeline.hpp"
#include "nanopk/priors.hpp"
#include "nanopk/random.hpp"
#include "nanopk/report.hpp"
#include "nanopk/ridge.hpp"
#include "nanopk/saliency.hpp"
#include "nanopk/standardize.hpp"
#include "nanopk/synth.hpp"
#include "nanopk/trees.hpp"
