#pragma once

#include "performa/linalg.hpp"
#include "performa/random.hpp"
#include "performa/pushforward.hpp"
#include "performa/losses.hpp"
#include "performa/estimators.hpp"
#include "performa/risk.hpp"
#include "performa/optimizers.hpp"
#include "performa/datagen.hpp"
#include "performa/experiment.hpp"
