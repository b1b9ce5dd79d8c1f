#pragma once

#include "opmod/core.hpp"
#include "opmod/bimodule.hpp"
#include "opmod/algebra.hpp"
#include "opmod/form.hpp"
#include "opmod/gns.hpp"
#include "opmod/stinespring.hpp"
#include "opmod/instances.hpp"
#include "opmod/json_io.hpp"
#include "opmod/suite.hpp"
