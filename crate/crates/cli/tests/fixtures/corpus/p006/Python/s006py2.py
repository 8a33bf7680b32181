# double solution 2
v, y = map(int, input().split())
print(v + v)
