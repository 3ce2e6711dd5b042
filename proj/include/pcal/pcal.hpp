#ifndef PCAL_PCAL_HPP
#define PCAL_PCAL_HPP

// Umbrella header.
#include "admm.hpp"
#include "affine.hpp"
#include "certify.hpp"
#include "experiment.hpp"
#include "format.hpp"
#include "instance.hpp"
#include "lifting.hpp"
#include "plot.hpp"
#include "prox.hpp"
#include "recovery.hpp"
#include "serialize.hpp"
#include "types.hpp"

#endif  // PCAL_PCAL_HPP
