"""
Test suite for debias-np.

This package contains all tests for the debias-np library, CLI and MCP server.
"""
