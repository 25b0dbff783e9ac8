#pragma once

#include "uhfsegkit/ensemble.hpp"
#include "uhfsegkit/geometry.hpp"
#include "uhfsegkit/labels.hpp"
#include "uhfsegkit/metrics.hpp"
#include "uhfsegkit/nifti.hpp"
#include "uhfsegkit/pipeline.hpp"
#include "uhfsegkit/resample.hpp"
#include "uhfsegkit/rng.hpp"
#include "uhfsegkit/stats.hpp"
#include "uhfsegkit/synth.hpp"
#include "uhfsegkit/volumetry.hpp"
#include "uhfsegkit/voxel_grid.hpp"
