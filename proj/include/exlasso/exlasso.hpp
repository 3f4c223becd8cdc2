#pragma once

#include "exlasso/common.hpp"
#include "exlasso/model.hpp"
#include "exlasso/prox.hpp"
#include "exlasso/jacobian.hpp"
#include "exlasso/loss.hpp"
#include "exlasso/objective.hpp"
#include "exlasso/linalg.hpp"
#include "exlasso/ssn.hpp"
#include "exlasso/ppdna.hpp"
#include "exlasso/baselines.hpp"
#include "exlasso/synthetic.hpp"
#include "exlasso/io.hpp"
