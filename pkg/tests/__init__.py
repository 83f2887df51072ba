"""Tests package"""