#pragma once

// Umbrella header: the full multi-resolution gridding toolkit.

#include "mrg/config.hpp"
#include "mrg/csv.hpp"
#include "mrg/engine.hpp"
#include "mrg/errors.hpp"
#include "mrg/fixed.hpp"
#include "mrg/grid.hpp"
#include "mrg/ingest.hpp"
#include "mrg/io.hpp"
#include "mrg/postprocess.hpp"
#include "mrg/realloc.hpp"
#include "mrg/record.hpp"
#include "mrg/rules.hpp"
#include "mrg/synth.hpp"
#include "mrg/variance.hpp"
#include "mrg/version.hpp"
