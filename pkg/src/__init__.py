# MitLindblad Source Package
