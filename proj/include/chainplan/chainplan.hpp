#pragma once

#include "chainplan/core.hpp"
#include "chainplan/registry.hpp"
#include "chainplan/plan.hpp"
#include "chainplan/type_graph.hpp"
#include "chainplan/schema.hpp"
#include "chainplan/retriever.hpp"
#include "chainplan/llm_client.hpp"
#include "chainplan/metrics.hpp"
#include "chainplan/executor.hpp"
#include "chainplan/pipelines.hpp"
