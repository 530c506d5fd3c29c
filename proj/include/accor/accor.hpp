#pragma once

#include "accor/binary.hpp"
#include "accor/config.hpp"
#include "accor/ctensor.hpp"
#include "accor/dataio.hpp"
#include "accor/dataset.hpp"
#include "accor/dft.hpp"
#include "accor/gradcheck.hpp"
#include "accor/layers.hpp"
#include "accor/loss.hpp"
#include "accor/model.hpp"
#include "accor/optim.hpp"
#include "accor/rng.hpp"
#include "accor/selfcheck.hpp"
#include "accor/signal.hpp"
#include "accor/trainer.hpp"
