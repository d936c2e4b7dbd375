#pragma once

#include "spamoe/autodiff.hpp"
#include "spamoe/bands.hpp"
#include "spamoe/common.hpp"
#include "spamoe/config.hpp"
#include "spamoe/encoder.hpp"
#include "spamoe/experts.hpp"
#include "spamoe/fft.hpp"
#include "spamoe/io.hpp"
#include "spamoe/loss.hpp"
#include "spamoe/metrics.hpp"
#include "spamoe/model.hpp"
#include "spamoe/optimizer.hpp"
#include "spamoe/preference.hpp"
#include "spamoe/router.hpp"
#include "spamoe/schedule.hpp"
#include "spamoe/spectral.hpp"
#include "spamoe/synth.hpp"
#include "spamoe/tensor.hpp"
#include "spamoe/theory.hpp"
#include "spamoe/train.hpp"
