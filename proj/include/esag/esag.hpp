#pragma once

#include "esag/core.hpp"
#include "esag/density.hpp"
#include "esag/diagnostics.hpp"
#include "esag/fit.hpp"
#include "esag/io.hpp"
#include "esag/param.hpp"
#include "esag/sampling.hpp"
#include "esag/simstudy.hpp"
