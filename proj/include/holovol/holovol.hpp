#pragma once

// Convenience header pulling in the whole library.

#include "holovol/detect.hpp"
#include "holovol/errors.hpp"
#include "holovol/fft.hpp"
#include "holovol/grid.hpp"
#include "holovol/io.hpp"
#include "holovol/optics.hpp"
#include "holovol/parallel.hpp"
#include "holovol/pipeline.hpp"
#include "holovol/preprocess.hpp"
#include "holovol/quantify.hpp"
#include "holovol/reconstruct.hpp"
#include "holovol/simulate.hpp"
#include "holovol/stats.hpp"
#include "holovol/wavelet.hpp"
