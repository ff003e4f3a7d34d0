#pragma once

#include "stakes/cascade.hpp"
#include "stakes/commands.hpp"
#include "stakes/csv.hpp"
#include "stakes/error.hpp"
#include "stakes/filtering.hpp"
#include "stakes/manifest.hpp"
#include "stakes/metrics.hpp"
#include "stakes/probe.hpp"
#include "stakes/probe_io.hpp"
#include "stakes/random.hpp"
#include "stakes/shard.hpp"
#include "stakes/synthetic.hpp"
#include "stakes/text.hpp"
#include "stakes/trainer.hpp"
