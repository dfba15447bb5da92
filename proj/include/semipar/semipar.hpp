#ifndef SEMIPAR_SEMIPAR_HPP
#define SEMIPAR_SEMIPAR_HPP

#include "semipar/error.hpp"
#include "semipar/quadrature.hpp"
#include "semipar/random.hpp"
#include "semipar/linalg.hpp"
#include "semipar/orthopoly.hpp"
#include "semipar/measures.hpp"
#include "semipar/estimand.hpp"
#include "semipar/direct_imaging.hpp"
#include "semipar/spade.hpp"
#include "semipar/montecarlo.hpp"

#endif  // SEMIPAR_SEMIPAR_HPP
