#ifndef LINFLOW_LINFLOW_HPP
#define LINFLOW_LINFLOW_HPP

#include "linflow/core.hpp"
#include "linflow/diagnostics.hpp"
#include "linflow/geometry.hpp"
#include "linflow/initializers.hpp"
#include "linflow/integrator.hpp"
#include "linflow/landscape.hpp"
#include "linflow/linalg.hpp"
#include "linflow/model.hpp"

#endif  // LINFLOW_LINFLOW_HPP
