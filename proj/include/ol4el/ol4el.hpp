#pragma once

#include "ol4el/assignment.hpp"
#include "ol4el/bandit.hpp"
#include "ol4el/config.hpp"
#include "ol4el/coordinator.hpp"
#include "ol4el/data.hpp"
#include "ol4el/edge.hpp"
#include "ol4el/errors.hpp"
#include "ol4el/experiment.hpp"
#include "ol4el/learners.hpp"
#include "ol4el/random.hpp"
#include "ol4el/toml_lite.hpp"
