"""Tools package."""
from tools.export_tool import ExportTool

__all__ = ["ExportTool"]
