# MCP server exposing the vr3dense geometry and evaluation kernels
