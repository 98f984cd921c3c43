#pragma once

#include "datkit/core.hpp"
#include "datkit/dat.hpp"
#include "datkit/dataio.hpp"
#include "datkit/detector.hpp"
#include "datkit/error.hpp"
#include "datkit/eval.hpp"
#include "datkit/external_detector.hpp"
#include "datkit/fft.hpp"
#include "datkit/kcf.hpp"
#include "datkit/median_flow.hpp"
#include "datkit/optical_flow.hpp"
#include "datkit/random.hpp"
#include "datkit/run_config.hpp"
#include "datkit/stats.hpp"
#include "datkit/sweep.hpp"
#include "datkit/synth.hpp"
#include "datkit/tracker.hpp"
