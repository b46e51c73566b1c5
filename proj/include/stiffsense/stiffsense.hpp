#pragma once

// Umbrella header for the stiffsense library: damping frequency and damping
// ratio estimation from pointing-device trajectories via an order-4 LPC
// filter and a mass-spring-damper model fit, plus the validation protocol
// built on top (correlation sweeps and SVM stress classification).

#include "stiffsense/classifier.hpp"
#include "stiffsense/error.hpp"
#include "stiffsense/lpc.hpp"
#include "stiffsense/msd.hpp"
#include "stiffsense/nelder_mead.hpp"
#include "stiffsense/pipeline.hpp"
#include "stiffsense/preprocess.hpp"
#include "stiffsense/rng.hpp"
#include "stiffsense/stats.hpp"
#include "stiffsense/svm.hpp"
#include "stiffsense/synth.hpp"
#include "stiffsense/trajectory.hpp"
#include "stiffsense/trial_io.hpp"
#include "stiffsense/version.hpp"
