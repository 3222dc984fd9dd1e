#ifndef HISTOLOC_HISTOLOC_HPP
#define HISTOLOC_HISTOLOC_HPP

#include "histoloc/errors.hpp"
#include "histoloc/geometry.hpp"
#include "histoloc/histology.hpp"
#include "histoloc/io.hpp"
#include "histoloc/plane_assignment.hpp"
#include "histoloc/stats.hpp"
#include "histoloc/synth.hpp"
#include "histoloc/volume.hpp"

#endif
