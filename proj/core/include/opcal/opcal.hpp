#pragma once

#include "opcal/calibrate.hpp"
#include "opcal/deim.hpp"
#include "opcal/errors.hpp"
#include "opcal/fom.hpp"
#include "opcal/keyvalue.hpp"
#include "opcal/opinf.hpp"
#include "opcal/pod.hpp"
#include "opcal/rom.hpp"
#include "opcal/snapshots.hpp"
#include "opcal/text_io.hpp"
#include "opcal/types.hpp"
