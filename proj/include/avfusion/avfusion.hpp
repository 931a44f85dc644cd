#pragma once

#include "avfusion/av_object.hpp"
#include "avfusion/error.hpp"
#include "avfusion/evaluation.hpp"
#include "avfusion/event_sync.hpp"
#include "avfusion/geometry.hpp"
#include "avfusion/io.hpp"
#include "avfusion/mixture.hpp"
#include "avfusion/pipeline.hpp"
#include "avfusion/selection.hpp"
#include "avfusion/simulator.hpp"
