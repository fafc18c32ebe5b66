#!/usr/bin/env python3
"""MCP Server exposing the vr3dense geometry and evaluation kernels."""
import logging
import sys
from typing import Any, Optional

from mcp.server.fastmcp import FastMCP

from vr3dense import __version__
from vr3dense.errors import ConfigError

from . import kernel_tools
from .config import Config

# Configure logging
logging.basicConfig(
    level=Config.LOG_LEVEL,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stderr)
    ]
)
logger = logging.getLogger(__name__)

# Create FastMCP server instance
mcp = FastMCP(Config.SERVER_NAME)


def _run_config():
    return Config.run_config()


@mcp.tool()
def ping() -> dict:
    """
    Health check: reports the kernel version and whether the run config loads.

    Returns:
        Dictionary with server status and config status
    """
    status = {"server": "running", "version": __version__, "config": {"status": "unknown"}}
    try:
        cfg = _run_config()
        status["config"] = {"status": "loaded", "classes": cfg.class_names, "roi_dims": list(cfg.roi.dims)}
    except ConfigError as e:
        status["config"] = {"status": "error", "error": str(e)}
    return status


@mcp.tool()
def box_iou(box_a: list[float], box_b: list[float]) -> dict:
    """
    Overlap of two LiDAR-frame boxes given as [x, y, z, l, w, h, yaw].

    Returns:
        Dictionary with iou_bev, iou_3d and giou_3d
    """
    logger.info("box_iou called")
    return kernel_tools.box_overlap(box_a, box_b)


@mcp.tool()
def voxelize_scan(points: list[list[float]], density_mode: Optional[str] = None) -> dict:
    """
    Voxelize a scan of [x, y, z, intensity] rows with the configured ROI.

    Args:
        points: scan rows
        density_mode: raw, log1p or binary (default: config value)
    """
    logger.info(f"voxelize_scan called with {len(points)} points")
    try:
        cfg = _run_config()
    except ConfigError as e:
        return {"error": str(e), "code": e.code}
    return kernel_tools.voxel_stats(points, cfg, density_mode)


@mcp.tool()
def project_scan(points: list[list[float]], calib_text: str, height: int, width: int) -> dict:
    """
    Project a scan into the left camera image.

    Args:
        points: scan rows [x, y, z, intensity]
        calib_text: KITTI calibration file contents
        height: image height in pixels
        width: image width in pixels
    """
    logger.info(f"project_scan called with {len(points)} points into {height}x{width}")
    try:
        cfg = _run_config()
    except ConfigError as e:
        return {"error": str(e), "code": e.code}
    return kernel_tools.project_scan(points, calib_text, height, width, cfg)


@mcp.tool()
def depth_metrics(pred: list[list[float]], gt_points: list[list[float]]) -> dict:
    """
    Depth metrics (abs_rel, sq_rel, rmse, rmse_log, delta1..3) of a dense
    depth map against sparse [u, v, depth] samples.
    """
    logger.info(f"depth_metrics called with {len(gt_points)} samples")
    try:
        cfg = _run_config()
    except ConfigError as e:
        return {"error": str(e), "code": e.code}
    return kernel_tools.depth_report(pred, gt_points, cfg)


@mcp.tool()
def average_precision(dets: list[dict[str, Any]], gts: list[dict[str, Any]], iou_threshold: float = 0.7) -> dict:
    """
    40-recall-point AP for one frame, overall and per class.

    Args:
        dets: [{"box": [7 floats], "confidence": float, "class_id": int}, ...]
        gts: [{"box": [7 floats], "class_id": int}, ...]
        iou_threshold: 3D IoU needed for a true positive
    """
    logger.info(f"average_precision called with {len(dets)} detections, {len(gts)} gt boxes")
    return kernel_tools.average_precision(dets, gts, iou_threshold)


def main():
    """Main entry point for the MCP server."""
    # Validate configuration
    is_valid, error_msg = Config.validate()
    if not is_valid:
        logger.error(f"Configuration error: {error_msg}")
        logger.error("Check these environment variables:")
        logger.error("  - VR3DENSE_CONFIG (optional, JSON run config)")
        logger.error("  - VR3DENSE_WORKERS (optional, >= 1)")
        logger.error("  - VR3DENSE_MCP_LOG_LEVEL (optional, default INFO)")
        sys.exit(1)

    logger.info(f"Starting {Config.SERVER_NAME} MCP Server (vr3dense {__version__})...")
    logger.info(f"Run config: {Config.CONFIG_PATH or 'defaults'}")

    # Run the server (default transport is stdio for IDE clients)
    try:
        mcp.run()
    except KeyboardInterrupt:
        logger.info("Shutting down...")
    except Exception as e:
        logger.exception("MCP server exited with error: %s", e)
        sys.exit(1)


if __name__ == "__main__":
    main()
