#ifndef KOOPMAN_KOOPMAN_HPP
#define KOOPMAN_KOOPMAN_HPP

#include "koopman/errors.hpp"
#include "koopman/dyn_systems.hpp"
#include "koopman/simulate.hpp"
#include "koopman/nn.hpp"
#include "koopman/models.hpp"
#include "koopman/training.hpp"
#include "koopman/evaluation.hpp"
#include "koopman/io.hpp"

#endif // KOOPMAN_KOOPMAN_HPP
